"""Model layer of the contract market simulator."""
