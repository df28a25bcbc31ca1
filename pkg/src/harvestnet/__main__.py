import sys

from harvestnet.cli import main

sys.exit(main())
