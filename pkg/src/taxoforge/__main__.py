import sys

from taxoforge.cli import main

sys.exit(main())
