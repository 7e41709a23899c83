import sys

from qscgrn.cli import main

sys.exit(main())
