#include <cstdio>

int main() {
    std::puts("diffplan: placeholder");
    return 0;
}
