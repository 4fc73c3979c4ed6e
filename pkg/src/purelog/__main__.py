import sys

from purelog.cli import main

sys.exit(main())
