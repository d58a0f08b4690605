#!/usr/bin/env python3
"""Run the allelix command line from a source checkout: python run.py <verb> ..."""
import sys

from allelix.commands import main

if __name__ == '__main__':
    sys.exit(main())
