char *readline(const char *prompt) { return 0; }
