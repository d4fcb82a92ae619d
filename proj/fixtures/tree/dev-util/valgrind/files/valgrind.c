int main(void) { return run_tool(); }
