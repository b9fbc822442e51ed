from .napkit import main

main()
