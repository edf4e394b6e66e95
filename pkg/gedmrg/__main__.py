import sys

from gedmrg.cli.cli import main

sys.exit(main())
