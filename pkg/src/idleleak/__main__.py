import sys

from idleleak.cli import main

sys.exit(main())
