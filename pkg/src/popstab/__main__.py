import sys

from popstab.cli import main

sys.exit(main())
