from traitlets import Dict

from .cli import (EdgeAuctionApp, ValidateApp, AuctionApp, SimulateApp,
                  CompareApp, BandwidthApp, DirectivesApp)

# -----------------------------------------------------------------------

class EdgeAuctionMain(EdgeAuctionApp):
    """
    The main application, with one subcommand per operation
    """
    subcommands = Dict({
        'validate': (ValidateApp,
                     ValidateApp.description.splitlines()[0]),
        'auction': (AuctionApp,
                    AuctionApp.description.splitlines()[0]),
        'simulate': (SimulateApp,
                     SimulateApp.description.splitlines()[0]),
        'compare': (CompareApp,
                    CompareApp.description.splitlines()[0]),
        'bandwidth': (BandwidthApp,
                      BandwidthApp.description.splitlines()[0]),
        'directives': (DirectivesApp,
                       DirectivesApp.description.splitlines()[0]),
    })


# -----------------------------------------------------------------------

def main():
    """
    This is the installed entry point
    """
    EdgeAuctionMain.launch_instance()

if __name__ == '__main__':
    main()
