# denots/__main__.py

from denots.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
