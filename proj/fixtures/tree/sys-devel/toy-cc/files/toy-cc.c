/* the toy compiler driver */
int main(int argc, char **argv) { return compile(argc, argv); }
