# thalassa/__main__.py
from thalassa.cli import main

main()
