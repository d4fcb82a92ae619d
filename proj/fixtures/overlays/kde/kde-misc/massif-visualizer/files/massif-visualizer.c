int main(void) { return show_profile(); }
