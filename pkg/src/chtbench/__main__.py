from chtbench.cli import main

main()
