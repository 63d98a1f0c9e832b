import sys

from oraclesim.scenario.cli import main

sys.exit(main())
