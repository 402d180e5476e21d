import sys

from qdistinct.cli import main

sys.exit(main())
