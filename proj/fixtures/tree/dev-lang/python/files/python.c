/* toy interpreter main */
int main(int argc, char **argv) {
  return run_interpreter(argc, argv);
}
