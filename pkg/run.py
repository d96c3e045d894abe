#!/usr/bin/env python3
import sys

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from app.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
