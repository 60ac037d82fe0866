import sys

from sptcl.main import main

sys.exit(main())
