import sys

from adavara.harness.cli import main

sys.exit(main())
