import sys

from ncota.cli import main

sys.exit(main())
