import sys

from herdlab.cli import main

sys.exit(main())
