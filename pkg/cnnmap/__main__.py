from cnnmap.main import main

main()
