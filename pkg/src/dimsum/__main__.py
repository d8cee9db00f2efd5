from dimsum.cli import main
import sys

sys.exit(main())
