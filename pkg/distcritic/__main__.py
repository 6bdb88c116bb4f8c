# Helper for running DistCritic with python -m.
import sys
from .cli import main
sys.exit(main())
