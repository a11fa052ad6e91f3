import sys

from fracstokes.cli import main

sys.exit(main())
