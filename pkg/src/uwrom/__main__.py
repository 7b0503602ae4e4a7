import sys

from uwrom.cli import main

sys.exit(main())
