"""Pure-Python interpreter kernel.

Semantically identical to the compiled ``_vmcore`` extension and used when the
extension is not built (or ``SEMID_PURE=1`` is set).
"""

MASK = (1 << 64) - 1

ST_RET = 0
ST_FAULT = 1
ST_TIMEOUT = 2

F_UNMAPPED_READ = 1
F_UNMAPPED_WRITE = 2
F_DIVIDE_BY_ZERO = 3
F_ILLEGAL = 4


def run(ops, ra, rb, imms, regs_in, bases, bufs, ret_reg, budget, tracing):
    n = len(ops)
    regs = [v & MASK for v in regs_in]
    cov = bytearray(n)
    syscalls = []
    trace = [] if tracing else None
    regions = [(base, len(buf), buf) for base, buf in zip(bases, bufs)]
    executed = 0
    pc = 0

    def find(addr, width):
        for base, size, buf in regions:
            off = addr - base
            if 0 <= off and off + width <= size:
                return buf, off
        return None, 0

    def result(status, fault):
        return status, regs, executed, cov, syscalls, fault, trace

    while True:
        if pc < 0 or pc >= n:
            return result(ST_FAULT, (F_ILLEGAL, 0, -1, 0, executed, pc))
        if executed >= budget:
            return result(ST_TIMEOUT, None)
        op = ops[pc]
        a = ra[pc]
        b = rb[pc]
        imm = imms[pc] & MASK
        if a >= 16 or b >= 16 or op > 22:
            return result(ST_FAULT, (F_ILLEGAL, 0, -1, 0, executed, pc))
        executed += 1
        cov[pc] = 1
        ea = None
        if 12 <= op <= 15:
            base_reg = b if op <= 13 else a
            ea = (regs[base_reg] + imm) & MASK
        if tracing:
            trace.append((pc, tuple(regs), ea))
        nxt = pc + 1

        if op == 0:  # LI
            regs[a] = imm
        elif op == 1:  # MOV
            regs[a] = regs[b]
        elif op == 2:
            regs[a] = (regs[a] + regs[b]) & MASK
        elif op == 3:
            regs[a] = (regs[a] - regs[b]) & MASK
        elif op == 4:
            regs[a] = (regs[a] * regs[b]) & MASK
        elif op == 5:
            if regs[b] == 0:
                return result(ST_FAULT, (F_DIVIDE_BY_ZERO, 0, -1, 0, executed - 1, pc))
            regs[a] = regs[a] // regs[b]
        elif op == 6:
            regs[a] &= regs[b]
        elif op == 7:
            regs[a] |= regs[b]
        elif op == 8:
            regs[a] ^= regs[b]
        elif op == 9:
            regs[a] = (regs[a] << (regs[b] & 63)) & MASK
        elif op == 10:
            regs[a] = regs[a] >> (regs[b] & 63)
        elif op == 11:  # ADDI
            regs[a] = (regs[a] + imm) & MASK
        elif op == 12 or op == 13:  # LD / LDB
            width = 8 if op == 12 else 1
            buf, off = find(ea, width)
            if buf is None:
                return result(ST_FAULT, (F_UNMAPPED_READ, ea, b, width, executed - 1, pc))
            regs[a] = int.from_bytes(buf[off:off + width], "little")
        elif op == 14 or op == 15:  # ST / STB
            width = 8 if op == 14 else 1
            buf, off = find(ea, width)
            if buf is None:
                return result(ST_FAULT, (F_UNMAPPED_WRITE, ea, a, width, executed - 1, pc))
            buf[off:off + width] = (regs[b] & (MASK if width == 8 else 0xFF)).to_bytes(width, "little")
        elif op <= 19:  # branches
            x = regs[a]
            y = regs[b]
            if op == 16:
                taken = x == y
            elif op == 17:
                taken = x != y
            else:
                sx = x - (1 << 64) if x >> 63 else x
                sy = y - (1 << 64) if y >> 63 else y
                taken = sx < sy if op == 18 else sx >= sy
            if taken:
                nxt = imm if imm < n else -1
        elif op == 20:  # JMP
            nxt = imm if imm < n else -1
        elif op == 21:  # SYS
            if imm not in syscalls:
                syscalls.append(imm)
            regs[ret_reg] = 0
        else:  # RET
            return result(ST_RET, None)
        pc = nxt
