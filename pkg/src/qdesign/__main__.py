import sys

from qdesign.cli import main

sys.exit(main())
