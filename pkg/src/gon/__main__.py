import sys

from gon.cli import main

sys.exit(main())
