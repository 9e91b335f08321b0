import sys

from mgtlab.main import main

sys.exit(main())
