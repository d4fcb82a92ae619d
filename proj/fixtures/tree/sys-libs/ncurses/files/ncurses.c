int initscr(void) { return 0; }
