int ls(int argc, char **argv) { return 0; }
int cat(int argc, char **argv) { return 0; }
