#include <cstdio>

int main() {
    std::puts("dferclip: placeholder");
    return 0;
}
