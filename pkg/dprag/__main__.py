# dprag/__main__.py
from dprag.cli import main

raise SystemExit(main())
