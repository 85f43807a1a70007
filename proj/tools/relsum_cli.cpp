// Placeholder while the library grows; replaced by the full CLI.
int main() { return 0; }
