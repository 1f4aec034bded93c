from colorama import Fore, Style, init

# Initialize colorama for Windows compatibility
init(autoreset=True)


def print_otgp_banner():
    """Print the colored start-up banner"""

    banner = f"""
{Fore.CYAN}{Style.BRIGHT}
     ██████╗ ████████╗      ██████╗ ██████╗
    ██╔═══██╗╚══██╔══╝     ██╔════╝ ██╔══██╗
    ██║   ██║   ██║        ██║  ███╗██████╔╝
    ██║   ██║   ██║        ██║   ██║██╔═══╝
    ╚██████╔╝   ██║        ╚██████╔╝██║
     ╚═════╝    ╚═╝         ╚═════╝ ╚═╝
{Style.RESET_ALL}
{Fore.MAGENTA}━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
{Fore.GREEN}{Style.BRIGHT}   📊 Gaussian Processes on Probability Measures 📊
{Fore.MAGENTA}━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
{Style.RESET_ALL}
{Fore.WHITE}{Style.BRIGHT}    Kernels:{Style.RESET_ALL}
    {Fore.CYAN}✓{Style.RESET_ALL} Wasserstein (WGP, SWGP, PWA, PCPWA)
    {Fore.CYAN}✓{Style.RESET_ALL} Uncertain-input and mean-embedding baselines
    {Fore.CYAN}✓{Style.RESET_ALL} Uniform error-band certificates
{Style.RESET_ALL}
"""

    print(banner)


def print_command_header(command, detail=""):
    """One-line header printed before each command runs"""
    suffix = f" {Fore.WHITE}{detail}" if detail else ""
    print(f"{Fore.YELLOW}{Style.BRIGHT}▶ {command}{Style.RESET_ALL}{suffix}{Style.RESET_ALL}")
