/* toy interpreter main, 2.7.14 */
int main(int argc, char **argv) {
  return run_interpreter(argc, argv);
}
