from gkelab.cli import main

raise SystemExit(main())
