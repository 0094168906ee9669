import sys

from plenoptic_observer.cli import main

sys.exit(main())
