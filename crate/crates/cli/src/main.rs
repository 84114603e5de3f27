fn main() {
    println!("{}", mscrt::probe::run());
}
