"""Standard chain layout and contract deployment for a marketplace world.

Chain 0 is the governance chain, chain 1 the gas-free asset chain and every
further chain a coin chain carrying a coin contract, a market contract and a
registration contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .simchain import GasSchedule, World

GOV_CHAIN = 0
ASSET_CHAIN = 1


@dataclass
class Deployment:
    world: World
    authority: bytes
    coin_chains: tuple[int, ...]
    coins: dict[int, bytes] = field(default_factory=dict)
    markets: dict[int, bytes] = field(default_factory=dict)
    registries: dict[int, bytes] = field(default_factory=dict)
    asset: bytes = b""
    governance: bytes = b""
    treasury: bytes = b""
    gov_chain: int = GOV_CHAIN
    asset_chain: int = ASSET_CHAIN

    def mint(self, chain: int, to: bytes, amount: int) -> None:
        self.world.call(chain, self.authority, self.coins[chain], "mint", to, amount).raise_for_revert()

    def balance(self, chain: int, account: bytes) -> int:
        return self.world.view(chain, self.coins[chain], "balanceOf", account)

    def supply(self, chain: int) -> int:
        return self.world.view(chain, self.coins[chain], "totalSupply")

    def trusted_registries(self) -> tuple[tuple[int, bytes], ...]:
        return tuple((c, self.registries[c]) for c in self.coin_chains)


def build_world(n_coin_chains: int = 2, delta: int = 2, seed: int = 0,
                schedule: GasSchedule | None = None) -> World:
    schedule = schedule or GasSchedule()
    return World(n_coin_chains + 2, delta, schedule, seed, chain_schedules={ASSET_CHAIN: GasSchedule.zero()})


def deploy_system(world: World, authority_label: str = "authority") -> Deployment:
    if len(world.chains) < 3:
        raise ValueError("need a governance chain, an asset chain and at least one coin chain")
    kr = world.keyring
    auth = kr.account(authority_label)
    coin_chains = tuple(range(2, len(world.chains)))
    dep = Deployment(world, auth, coin_chains)
    for c in (GOV_CHAIN,) + coin_chains:
        dep.coins[c] = world.deploy(c, auth, "coin")
    for c in coin_chains:
        dep.markets[c] = world.deploy(c, auth, "market", dep.coins[c])
        world.call(c, auth, dep.coins[c], "addOperator", dep.markets[c]).raise_for_revert()
        dep.registries[c] = world.deploy(c, auth, "registration")
    dep.asset = world.deploy(ASSET_CHAIN, auth, "asset")
    dep.treasury = kr.account("treasury")
    dep.governance = world.deploy(GOV_CHAIN, auth, "governance", dep.coins[GOV_CHAIN], dep.treasury)
    world.call(GOV_CHAIN, auth, dep.coins[GOV_CHAIN], "addOperator", dep.governance).raise_for_revert()
    return dep
