import sys

from .bench_harness.cli import main

sys.exit(main())
