import sys

from mv3c.cli import main

sys.exit(main())
