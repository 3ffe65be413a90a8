import sys

from mstat.cli import main

sys.exit(main())
