#include "alloc_tracker.hpp"

#include <atomic>
#include <cerrno>
#include <cstring>
#include <malloc.h>

extern "C" {
void* __libc_malloc(std::size_t);
void* __libc_calloc(std::size_t, std::size_t);
void* __libc_realloc(void*, std::size_t);
void* __libc_memalign(std::size_t, std::size_t);
void __libc_free(void*);
}

namespace {

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

void on_alloc(void* p) {
    if (!p) return;
    const std::size_t now = g_live.fetch_add(malloc_usable_size(p)) + malloc_usable_size(p);
    std::size_t peak = g_peak.load();
    while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
    }
}

void on_free(void* p) {
    if (p) g_live.fetch_sub(malloc_usable_size(p));
}

} // namespace

extern "C" {

void* malloc(std::size_t size) {
    void* p = __libc_malloc(size);
    on_alloc(p);
    return p;
}

void* calloc(std::size_t n, std::size_t size) {
    void* p = __libc_calloc(n, size);
    on_alloc(p);
    return p;
}

void* realloc(void* old, std::size_t size) {
    on_free(old);
    void* p = __libc_realloc(old, size);
    if (p) on_alloc(p);
    else if (old && size != 0) on_alloc(old);
    return p;
}

void free(void* p) {
    on_free(p);
    __libc_free(p);
}

void* memalign(std::size_t alignment, std::size_t size) {
    void* p = __libc_memalign(alignment, size);
    on_alloc(p);
    return p;
}

void* aligned_alloc(std::size_t alignment, std::size_t size) { return memalign(alignment, size); }

int posix_memalign(void** out, std::size_t alignment, std::size_t size) {
    void* p = memalign(alignment, size);
    if (!p) return ENOMEM;
    *out = p;
    return 0;
}

} // extern "C"

namespace mvc::oracle {

std::size_t live_heap_bytes() { return g_live.load(); }
std::size_t peak_heap_bytes() { return g_peak.load(); }
void reset_heap_peak() { g_peak.store(g_live.load()); }

} // namespace mvc::oracle
