import sys
sys.path.append("site-packages")
