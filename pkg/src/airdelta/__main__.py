import sys

from airdelta.cli import main

sys.exit(main())
