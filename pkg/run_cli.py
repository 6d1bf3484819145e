#!/usr/bin/env python3
"""
Command-line entry point for the CS-PAPI experiments
"""
from app.cli import main

if __name__ == "__main__":
    main()
