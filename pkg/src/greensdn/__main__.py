import sys

from greensdn.cli import main

sys.exit(main())
