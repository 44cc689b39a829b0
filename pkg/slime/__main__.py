import sys

from slime.main import main

sys.exit(main())
