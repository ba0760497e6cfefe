from nlslab.cli import main

raise SystemExit(main())
