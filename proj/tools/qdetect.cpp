#include <iostream>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::cerr << "qdetect: not implemented yet\n";
  return 2;
}
