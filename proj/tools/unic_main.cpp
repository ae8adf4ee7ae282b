// Placeholder while the library comes up; the real CLI lands with the
// trainer and evalkit modules.
int main() { return 0; }
