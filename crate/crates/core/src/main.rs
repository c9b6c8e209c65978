fn main() {
    shc::cli_main();
}
