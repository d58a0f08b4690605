import sys

from allelix.commands import main

sys.exit(main())
