import sys

from lobcast.cli import main

sys.exit(main())
