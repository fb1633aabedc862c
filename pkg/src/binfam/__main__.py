import sys

from binfam.cli import main

sys.exit(main())
