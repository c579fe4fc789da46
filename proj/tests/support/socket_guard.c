// LD_PRELOAD interposer: any attempt to open an IPv4/IPv6 socket ends the
// process with exit status 86. Unix-domain sockets pass through.
#define _GNU_SOURCE
#include <dlfcn.h>
#include <string.h>
#include <sys/socket.h>
#include <unistd.h>

int socket(int domain, int type, int protocol) {
    if (domain == AF_INET || domain == AF_INET6) {
        static const char msg[] = "socket_guard: network socket refused\n";
        (void)!write(2, msg, sizeof msg - 1);
        _exit(86);
    }
    int (*real)(int, int, int) = (int (*)(int, int, int))dlsym(RTLD_NEXT, "socket");
    return real(domain, type, protocol);
}
