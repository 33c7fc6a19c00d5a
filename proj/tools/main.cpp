#include <cstdio>
int main() { std::puts("defsurf"); return 0; }
