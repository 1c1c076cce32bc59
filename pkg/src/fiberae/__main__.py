import sys

from fiberae.cli import main

sys.exit(main())
