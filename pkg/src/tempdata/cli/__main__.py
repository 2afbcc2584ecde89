"""Enable ``python -m tempdata.cli``."""

from tempdata.cli import main

if __name__ == "__main__":
    main()
