int main(void) { return shell_loop(); }
