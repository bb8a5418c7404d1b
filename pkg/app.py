#!/usr/bin/env python3
import sys

from kdda.cli.main import main


sys.exit(main())
