from ksadi.cli import main

main()
