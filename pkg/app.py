import sys

from schwarz_pinn.cli import main

# ──────────────────────────────────────────────────────────────
# Entry point: python app.py run table1_smooth1d --desk-scale
# ──────────────────────────────────────────────────────────────

if __name__ == "__main__":
    sys.exit(main())
