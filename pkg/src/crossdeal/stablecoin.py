"""Native stablecoin contract: balances, transfers and operator pulls.

Escrow is plain custody: the market contract pulls coins to its own address
with :meth:`CoinContract.transferFrom` and pays them out with
:meth:`CoinContract.transfer`. Balance slots are charged a flat
``coin_transfer`` fee per movement instead of per-slot storage costs.
"""

from __future__ import annotations

from .errors import InsufficientFunds, Unauthorized
from .simchain import CallContext, Contract, external, register_kind, view


def _check_amount(amount: int) -> None:
    if not isinstance(amount, int) or isinstance(amount, bool) or amount < 0:
        raise InsufficientFunds(f"invalid amount {amount!r}")


@register_kind("coin")
class CoinContract(Contract):
    def setup(self, ctx: CallContext, authority: bytes | None = None) -> None:
        self.storage["authority"] = authority if authority is not None else ctx.caller
        self.storage["supply"] = 0

    # -- helpers -----------------------------------------------------------

    def _bal(self, account: bytes) -> int:
        return self.storage.get(("bal", account), 0)

    def _move(self, ctx: CallContext, src: bytes, dst: bytes, amount: int) -> None:
        _check_amount(amount)
        have = self._bal(src)
        if have < amount:
            raise InsufficientFunds(f"balance {have} < {amount}")
        ctx.charge("coin_transfer")
        if amount and src != dst:
            self.storage.set_unmetered(("bal", src), have - amount)
            self.storage.set_unmetered(("bal", dst), self._bal(dst) + amount)
        ctx.emit("CoinTransfer", frm=src, to=dst, amount=amount)

    def _require_authority(self, ctx: CallContext) -> None:
        if ctx.caller != self.storage["authority"]:
            raise Unauthorized("only the fixture authority may mint or burn")

    # -- entry points --------------------------------------------------------

    @external
    def mint(self, ctx: CallContext, to: bytes, amount: int) -> None:
        self._require_authority(ctx)
        _check_amount(amount)
        if amount == 0:
            return
        ctx.charge("coin_transfer")
        self.storage.set_unmetered(("bal", to), self._bal(to) + amount)
        self.storage.set_unmetered("supply", self.storage["supply"] + amount)
        ctx.emit("CoinTransfer", frm=b"", to=to, amount=amount)

    @external
    def burn(self, ctx: CallContext, holder: bytes, amount: int) -> None:
        """Remove coins from circulation (source half of a cross-chain move)."""
        self._require_authority(ctx)
        _check_amount(amount)
        have = self._bal(holder)
        if have < amount:
            raise InsufficientFunds(f"balance {have} < {amount}")
        ctx.charge("coin_transfer")
        self.storage.set_unmetered(("bal", holder), have - amount)
        self.storage.set_unmetered("supply", self.storage["supply"] - amount)
        ctx.emit("CoinTransfer", frm=holder, to=b"", amount=amount)

    @external
    def setAuthority(self, ctx: CallContext, authority: bytes) -> None:
        self._require_authority(ctx)
        self.storage["authority"] = authority

    @external
    def transfer(self, ctx: CallContext, to: bytes, amount: int) -> None:
        self._move(ctx, ctx.caller, to, amount)

    @external
    def approveOperator(self, ctx: CallContext, operator: bytes, allowed: bool = True) -> None:
        """Let *operator* (a market or governance contract) pull the caller's coins."""
        self.storage[("op", ctx.caller, operator)] = bool(allowed)

    @external
    def addOperator(self, ctx: CallContext, operator: bytes) -> None:
        """Register a system contract allowed to pull escrow from any holder."""
        self._require_authority(ctx)
        self.storage[("gop", operator)] = True

    @external
    def transferFrom(self, ctx: CallContext, src: bytes, to: bytes, amount: int) -> None:
        if src != ctx.caller and not self.isOperator(ctx, src, ctx.caller):
            raise Unauthorized("caller is not an approved operator")
        self._move(ctx, src, to, amount)

    @view
    def balanceOf(self, ctx: CallContext, account: bytes) -> int:
        return self._bal(account)

    @view
    def totalSupply(self, ctx: CallContext) -> int:
        return self.storage["supply"]

    @view
    def isOperator(self, ctx: CallContext, holder: bytes, operator: bytes) -> bool:
        return self.storage.get(("gop", operator), False) or self.storage.get(("op", holder, operator), False)

    def balances(self) -> dict[bytes, int]:
        """Off-chain inspection helper (not an entry point)."""
        return {k[1]: v for k, v in self.storage.items() if isinstance(k, tuple) and k[0] == "bal"}
