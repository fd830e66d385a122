import sys

from abssgd.cli import main

sys.exit(main())
