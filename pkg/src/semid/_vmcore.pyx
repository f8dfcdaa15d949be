# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled interpreter kernel. Mirrors ``_vmcore_py.run`` exactly."""

from libc.stdint cimport int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc

cdef enum:
    ST_RET = 0
    ST_FAULT = 1
    ST_TIMEOUT = 2

cdef enum:
    F_UNMAPPED_READ = 1
    F_UNMAPPED_WRITE = 2
    F_DIVIDE_BY_ZERO = 3
    F_ILLEGAL = 4

cdef enum:
    OP_LI = 0
    OP_MOV = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_AND = 6
    OP_OR = 7
    OP_XOR = 8
    OP_SHL = 9
    OP_SHR = 10
    OP_ADDI = 11
    OP_LD = 12
    OP_LDB = 13
    OP_ST = 14
    OP_STB = 15
    OP_BEQ = 16
    OP_BNE = 17
    OP_BLT = 18
    OP_BGE = 19
    OP_JMP = 20
    OP_SYS = 21
    OP_RET = 22


cdef inline int find_region(uint64_t addr, uint64_t width, int nreg, uint64_t* rbase,
                            uint64_t* rsize, int* last) noexcept nogil:
    cdef int i = last[0]
    cdef uint64_t off
    if i < nreg:
        off = addr - rbase[i]
        if addr >= rbase[i] and off < rsize[i] and rsize[i] - off >= width:
            return i
    for i in range(nreg):
        off = addr - rbase[i]
        if addr >= rbase[i] and off < rsize[i] and rsize[i] - off >= width:
            last[0] = i
            return i
    return -1


def run(const uint8_t[::1] ops, const uint8_t[::1] ra, const uint8_t[::1] rb,
        const int64_t[::1] imms, regs_in, bases, bufs, int ret_reg,
        uint64_t budget, bint tracing):
    cdef Py_ssize_t n = ops.shape[0]
    cdef uint64_t regs[16]
    cdef int nreg = len(bases)
    cdef int i, k, region, last = 0
    cdef uint64_t* rbase = <uint64_t*>malloc(max(nreg, 1) * sizeof(uint64_t))
    cdef uint64_t* rsize = <uint64_t*>malloc(max(nreg, 1) * sizeof(uint64_t))
    cdef uint8_t** rptr = <uint8_t**>malloc(max(nreg, 1) * sizeof(uint8_t*))
    cdef uint8_t[::1] mv
    cdef list views = []
    cdef bytearray cov = bytearray(n)
    cdef uint8_t[::1] covv
    cdef list syscalls = []
    cdef list trace = [] if tracing else None
    cdef uint64_t executed = 0
    cdef int64_t pc = 0, nxt
    cdef uint8_t op, a, b
    cdef uint64_t imm, ea = 0, x, y, off, width, v
    cdef bint taken
    cdef uint8_t* p
    cdef object fault = None
    cdef int status = ST_RET

    if n > 0:
        covv = cov
    for k in range(16):
        regs[k] = <uint64_t>(regs_in[k] & 0xFFFFFFFFFFFFFFFF)
    try:
        for k in range(nreg):
            mv = bufs[k]
            views.append(mv)
            rbase[k] = <uint64_t>bases[k]
            rsize[k] = mv.shape[0]
            rptr[k] = &mv[0] if mv.shape[0] > 0 else NULL

        while True:
            if pc < 0 or pc >= n:
                status = ST_FAULT
                fault = (F_ILLEGAL, 0, -1, 0, executed, pc)
                break
            if executed >= budget:
                status = ST_TIMEOUT
                break
            op = ops[pc]
            a = ra[pc]
            b = rb[pc]
            imm = <uint64_t>imms[pc]
            if a >= 16 or b >= 16 or op > OP_RET:
                status = ST_FAULT
                fault = (F_ILLEGAL, 0, -1, 0, executed, pc)
                break
            executed += 1
            covv[pc] = 1
            if op >= OP_LD and op <= OP_STB:
                if op <= OP_LDB:
                    ea = regs[b] + imm
                else:
                    ea = regs[a] + imm
            if tracing:
                trace.append((pc, tuple([regs[k] for k in range(16)]),
                              ea if (op >= OP_LD and op <= OP_STB) else None))
            nxt = pc + 1

            if op == OP_LI:
                regs[a] = imm
            elif op == OP_MOV:
                regs[a] = regs[b]
            elif op == OP_ADD:
                regs[a] = regs[a] + regs[b]
            elif op == OP_SUB:
                regs[a] = regs[a] - regs[b]
            elif op == OP_MUL:
                regs[a] = regs[a] * regs[b]
            elif op == OP_DIV:
                if regs[b] == 0:
                    status = ST_FAULT
                    fault = (F_DIVIDE_BY_ZERO, 0, -1, 0, executed - 1, pc)
                    break
                regs[a] = regs[a] // regs[b]
            elif op == OP_AND:
                regs[a] = regs[a] & regs[b]
            elif op == OP_OR:
                regs[a] = regs[a] | regs[b]
            elif op == OP_XOR:
                regs[a] = regs[a] ^ regs[b]
            elif op == OP_SHL:
                regs[a] = regs[a] << (regs[b] & 63)
            elif op == OP_SHR:
                regs[a] = regs[a] >> (regs[b] & 63)
            elif op == OP_ADDI:
                regs[a] = regs[a] + imm
            elif op == OP_LD or op == OP_LDB:
                width = 8 if op == OP_LD else 1
                region = find_region(ea, width, nreg, rbase, rsize, &last)
                if region < 0:
                    status = ST_FAULT
                    fault = (F_UNMAPPED_READ, ea, b, width, executed - 1, pc)
                    break
                p = rptr[region] + (ea - rbase[region])
                if width == 1:
                    regs[a] = p[0]
                else:
                    v = 0
                    for i in range(7, -1, -1):
                        v = (v << 8) | p[i]
                    regs[a] = v
            elif op == OP_ST or op == OP_STB:
                width = 8 if op == OP_ST else 1
                region = find_region(ea, width, nreg, rbase, rsize, &last)
                if region < 0:
                    status = ST_FAULT
                    fault = (F_UNMAPPED_WRITE, ea, a, width, executed - 1, pc)
                    break
                p = rptr[region] + (ea - rbase[region])
                v = regs[b]
                if width == 1:
                    p[0] = <uint8_t>(v & 0xFF)
                else:
                    for i in range(8):
                        p[i] = <uint8_t>(v & 0xFF)
                        v >>= 8
            elif op <= OP_BGE:
                x = regs[a]
                y = regs[b]
                if op == OP_BEQ:
                    taken = x == y
                elif op == OP_BNE:
                    taken = x != y
                elif op == OP_BLT:
                    taken = <int64_t>x < <int64_t>y
                else:
                    taken = <int64_t>x >= <int64_t>y
                if taken:
                    nxt = <int64_t>imm if imm < <uint64_t>n else -1
            elif op == OP_JMP:
                nxt = <int64_t>imm if imm < <uint64_t>n else -1
            elif op == OP_SYS:
                if imm not in syscalls:
                    syscalls.append(imm)
                regs[ret_reg] = 0
            else:
                status = ST_RET
                break
            pc = nxt
    finally:
        free(rbase)
        free(rsize)
        free(rptr)

    return (status, [regs[k] for k in range(16)], executed, cov, syscalls, fault, trace)
