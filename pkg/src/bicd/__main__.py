import sys

from bicd.cli import main

sys.exit(main())
