import sys

from lorentzgen.cli import main

sys.exit(main())
