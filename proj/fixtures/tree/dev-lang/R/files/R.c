int Rf_initEmbeddedR(int argc, char **argv) { return 0; }
